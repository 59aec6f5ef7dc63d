use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{ModelFamily, Parameter};
use crate::lineshape::LineProfile;
use crate::rate::{build_three_level, DriveField, HoleBurning, InhomogeneousModel, Quadrature};

/// Shape parameters in declaration order.
pub const SPECTRUM_PARAMS: [&str; 4] = ["homogeneous_fwhm", "splitting", "inhom_mix", "inhom_fwhm"];

/// Three-level hole-burning spectra, one dataset per pump power, sharing
/// the homogeneous width, ground splitting and inhomogeneous line.
///
/// The quadrature level is fixed so the model is a smooth function of its
/// parameters under finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFamily {
    pub degeneracies: (u32, u32, u32),
    pub tau_us: f64,
    pub pump_powers: Vec<f64>,
    pub probe_power: f64,
    pub pump_detuning_mhz: f64,
    pub inhom_centre_mhz: f64,
    pub quadrature: Quadrature,
    pub level: u32,
}

impl SpectrumFamily {
    pub fn new(degeneracies: (u32, u32, u32), tau_us: f64, pump_powers: Vec<f64>, probe_power: f64) -> Self {
        Self {
            degeneracies,
            tau_us,
            pump_powers,
            probe_power,
            pump_detuning_mhz: 0.0,
            inhom_centre_mhz: 0.0,
            quadrature: Quadrature::default(),
            level: 0,
        }
    }

    /// Parameters with physical bounds, all shared.
    pub fn parameters(start: [f64; 4]) -> Vec<Parameter> {
        vec![
            Parameter::new(SPECTRUM_PARAMS[0], start[0]).bounded(1e-6, f64::INFINITY),
            Parameter::new(SPECTRUM_PARAMS[1], start[1]).bounded(0.0, f64::INFINITY),
            Parameter::new(SPECTRUM_PARAMS[2], start[2]).bounded(0.0, 1.0).with_scale(0.1),
            Parameter::new(SPECTRUM_PARAMS[3], start[3]).bounded(1e-6, f64::INFINITY),
        ]
    }

    /// Unnormalized spectrum for one pump power.
    pub fn spectrum(&self, p: &[f64], pump_power: f64, x: &[f64]) -> Result<Vec<f64>> {
        if p.len() < 4 {
            return Err(Error::Data(format!("expected 4 shape parameters, got {}", p.len())));
        }
        let scheme = build_three_level(self.degeneracies, p[1], p[0], self.tau_us)?;
        let inhom = InhomogeneousModel::new(LineProfile::pseudo_voigt(p[3], p[2])?, self.inhom_centre_mhz);
        let mut hb = HoleBurning::new(&scheme, inhom);
        hb.quadrature = self.quadrature;
        let pump = DriveField::pump(self.pump_detuning_mhz, pump_power)?;
        Ok(hb.spectrum_fixed(&pump, self.probe_power, x, self.level)?.signal)
    }
}

impl ModelFamily for SpectrumFamily {
    fn shape(&self, p: &[f64], dataset: usize, x: &[f64]) -> Result<Vec<f64>> {
        let power = *self
            .pump_powers
            .get(dataset)
            .ok_or_else(|| Error::Data(format!("no pump power for dataset {dataset}")))?;
        self.spectrum(p, power, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{global_fit, FitOptions};
    use crate::spectrum::{linspace, SpectrumScan};

    #[test]
    fn noiseless_round_trip() {
        let fam = SpectrumFamily::new((1, 4, 3), 0.94, vec![0.2, 1.0], 0.1);
        let truth = [0.69, 3.848, 0.5, 33.0];
        let x = linspace(-10.0, 10.0, 61);
        let data: Vec<SpectrumScan> = fam
            .pump_powers
            .iter()
            .map(|&p| {
                let y = fam.spectrum(&truth, p, &x).unwrap();
                SpectrumScan::new(x.clone(), y.iter().map(|v| 3.0 * v - 0.1).collect()).unwrap()
            })
            .collect();
        let params = SpectrumFamily::parameters([0.8, 3.7, 0.5, 33.0]);
        let r = global_fit(&fam, &data, &params, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.value("homogeneous_fwhm") - 0.69).abs() < 1e-4, "{}", r.value("homogeneous_fwhm"));
        assert!((r.value("splitting") - 3.848).abs() < 1e-4, "{}", r.value("splitting"));
    }

    #[test]
    fn missing_power_is_an_error() {
        let fam = SpectrumFamily::new((1, 4, 3), 0.94, vec![0.2], 0.1);
        assert!(fam.shape(&[0.69, 3.848, 0.5, 33.0], 1, &[0.0]).is_err());
    }
}
