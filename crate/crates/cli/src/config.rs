//! Run configuration. Keys carry their unit (`_mhz`, `_us`, `_mt`, `_wsat`
//! for powers in units of the saturation power); unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use holeburn_core::lineshape::{LineProfile, ProfileKind, ZeemanConfig};
use holeburn_core::rate::{build_four_level, build_three_level, InhomogeneousModel, LevelScheme, Quadrature};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ThreeLevel,
    FourLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub name: Option<String>,
    pub emitter: EmitterConfig,
    pub inhomogeneous: InhomConfig,
    /// One simulated scan per pump drive.
    #[serde(default)]
    pub drives: Vec<DriveConfig>,
    pub scan: ScanConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    pub tau_exc_us: f64,
    pub homogeneous_fwhm_mhz: f64,
    /// three_level: (n1, n2, n3).
    #[serde(default)]
    pub degeneracies: Option<[u32; 3]>,
    #[serde(default)]
    pub zero_field_splitting_mhz: Option<f64>,
    /// four_level
    #[serde(default)]
    pub g_electron: Option<f64>,
    #[serde(default)]
    pub field_mt: Option<f64>,
    #[serde(default)]
    pub orientations: Vec<OrientationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationConfig {
    pub g_hole: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhomConfig {
    pub profile: ProfileKind,
    pub fwhm_mhz: f64,
    #[serde(default)]
    pub mix: Option<f64>,
    #[serde(default)]
    pub centre_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default)]
    pub detuning_mhz: f64,
    pub power_wsat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
    pub probe_power_wsat: f64,
    /// Write the pump-induced change (scan minus probe-only scan).
    #[serde(default)]
    pub subtract_probe_only: bool,
    /// Shift the far wings to 0 and the deepest point to -1.
    #[serde(default)]
    pub normalize: bool,
    /// Gaussian noise, standard deviation relative to the largest |signal|.
    #[serde(default)]
    pub noise_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub half_width_fwhm: f64,
    pub base_points: usize,
    pub rel_tol: f64,
    pub max_doublings: u32,
    /// Use this refinement level everywhere instead of adapting.
    pub fixed_level: Option<u32>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let q = Quadrature::default();
        Self {
            half_width_fwhm: q.half_width_fwhm,
            base_points: q.base_points,
            rel_tol: q.rel_tol,
            max_doublings: q.max_doublings,
            fixed_level: None,
        }
    }
}

impl QuadratureConfig {
    pub fn quadrature(&self) -> Quadrature {
        Quadrature {
            half_width_fwhm: self.half_width_fwhm,
            base_points: self.base_points,
            rel_tol: self.rel_tol,
            max_doublings: self.max_doublings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Starting values and bounds; names as in the spectrum family
    /// (homogeneous_fwhm, splitting, inhom_mix, inhom_fwhm). Missing ones
    /// start from the emitter and inhomogeneous sections.
    #[serde(default)]
    pub parameters: Vec<ParamConfig>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Extra degeneracy schemes fitted to the same data for comparison.
    #[serde(default)]
    pub compare_degeneracies: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamConfig {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub fixed: bool,
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        bail!("{key}: must be positive and finite, got {v}");
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.emitter;
        positive("emitter.tau_exc_us", e.tau_exc_us)?;
        positive("emitter.homogeneous_fwhm_mhz", e.homogeneous_fwhm_mhz)?;
        match self.model {
            ModelKind::ThreeLevel => {
                let d = e.degeneracies.context("emitter.degeneracies: required for three_level")?;
                if d.contains(&0) {
                    bail!("emitter.degeneracies: must be positive, got {d:?}");
                }
                let s =
                    e.zero_field_splitting_mhz.context("emitter.zero_field_splitting_mhz: required for three_level")?;
                if !(s >= 0.0) {
                    bail!("emitter.zero_field_splitting_mhz: must be non-negative, got {s}");
                }
            }
            ModelKind::FourLevel => {
                positive("emitter.g_electron", e.g_electron.context("emitter.g_electron: required for four_level")?)?;
                let b = e.field_mt.context("emitter.field_mt: required for four_level")?;
                if !(b >= 0.0) {
                    bail!("emitter.field_mt: must be non-negative, got {b}");
                }
                if e.orientations.is_empty() {
                    bail!("emitter.orientations: at least one orientation is required for four_level");
                }
                for (i, o) in e.orientations.iter().enumerate() {
                    positive(&format!("emitter.orientations[{i}].g_hole"), o.g_hole)?;
                    positive(&format!("emitter.orientations[{i}].weight"), o.weight)?;
                }
            }
        }
        let inh = &self.inhomogeneous;
        positive("inhomogeneous.fwhm_mhz", inh.fwhm_mhz)?;
        if let Some(m) = inh.mix {
            if !(0.0..=1.0).contains(&m) {
                bail!("inhomogeneous.mix: must lie in [0, 1], got {m}");
            }
        }
        if inh.profile == ProfileKind::PseudoVoigt && inh.mix.is_none() {
            bail!("inhomogeneous.mix: required for pseudo-voigt");
        }
        if self.drives.is_empty() {
            bail!("drives: at least one pump drive is required");
        }
        for (i, d) in self.drives.iter().enumerate() {
            if !(d.power_wsat >= 0.0) || !d.power_wsat.is_finite() {
                bail!("drives[{i}].power_wsat: must be non-negative, got {}", d.power_wsat);
            }
            if !d.detuning_mhz.is_finite() {
                bail!("drives[{i}].detuning_mhz: must be finite");
            }
        }
        let s = &self.scan;
        if s.points < 2 {
            bail!("scan.points: need at least 2, got {}", s.points);
        }
        if !(s.stop_mhz > s.start_mhz) {
            bail!("scan.stop_mhz: must exceed scan.start_mhz");
        }
        if !(s.probe_power_wsat >= 0.0) {
            bail!("scan.probe_power_wsat: must be non-negative, got {}", s.probe_power_wsat);
        }
        if !(s.noise_rel >= 0.0) {
            bail!("scan.noise_rel: must be non-negative, got {}", s.noise_rel);
        }
        let q = &self.quadrature;
        if q.base_points < 3 || q.base_points.is_multiple_of(2) {
            bail!("quadrature.base_points: must be odd and at least 3, got {}", q.base_points);
        }
        positive("quadrature.half_width_fwhm", q.half_width_fwhm)?;
        positive("quadrature.rel_tol", q.rel_tol)?;
        if let Some(f) = &self.fit {
            for (i, p) in f.parameters.iter().enumerate() {
                if !holeburn_core::holeburn::SPECTRUM_PARAMS.contains(&p.name.as_str()) {
                    bail!("fit.parameters[{i}].name: unknown parameter `{}`", p.name);
                }
            }
            if self.model != ModelKind::ThreeLevel {
                bail!("fit: only three_level spectra can be fitted");
            }
        }
        Ok(())
    }

    pub fn inhomogeneous(&self) -> Result<InhomogeneousModel> {
        let i = &self.inhomogeneous;
        let profile = LineProfile::new(
            i.profile,
            i.fwhm_mhz,
            i.mix.unwrap_or(match i.profile {
                ProfileKind::Gaussian => 1.0,
                _ => 0.0,
            }),
        )?;
        Ok(InhomogeneousModel::new(profile, i.centre_mhz))
    }

    /// Schemes with their orientation weights.
    pub fn schemes(&self) -> Result<Vec<(LevelScheme, f64)>> {
        let e = &self.emitter;
        match self.model {
            ModelKind::ThreeLevel => {
                let [a, b, c] = e.degeneracies.unwrap_or([1, 1, 1]);
                let s = build_three_level(
                    (a, b, c),
                    e.zero_field_splitting_mhz.unwrap_or(0.0),
                    e.homogeneous_fwhm_mhz,
                    e.tau_exc_us,
                )?;
                Ok(vec![(s, 1.0)])
            }
            ModelKind::FourLevel => e
                .orientations
                .iter()
                .map(|o| {
                    let z = ZeemanConfig::new(e.g_electron.unwrap_or(0.0), o.g_hole, e.field_mt.unwrap_or(0.0))?;
                    Ok((build_four_level(&z, e.homogeneous_fwhm_mhz, e.tau_exc_us)?, o.weight))
                })
                .collect(),
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        holeburn_core::spectrum::linspace(self.scan.start_mhz, self.scan.stop_mhz, self.scan.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
model = "three_level"
[emitter]
tau_exc_us = 0.94
homogeneous_fwhm_mhz = 0.69
degeneracies = [1, 4, 3]
zero_field_splitting_mhz = 3.848
[inhomogeneous]
profile = "lorentzian"
fwhm_mhz = 33
[[drives]]
power_wsat = 0.5
[scan]
start_mhz = -8
stop_mhz = 8
points = 17
probe_power_wsat = 0.1
"#;

    #[test]
    fn parses_minimal() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.drives.len(), 1);
        assert_eq!(c.grid().len(), 17);
        assert_eq!(c.schemes().unwrap().len(), 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = MINIMAL.replace("points = 17", "points = 17\nstep_mhz = 1");
        let msg = format!("{:#}", RunConfig::from_toml(&bad).unwrap_err());
        assert!(msg.contains("step_mhz"), "{msg}");
    }

    #[test]
    fn empty_drive_list_rejected() {
        let bad = MINIMAL.replace("[[drives]]\npower_wsat = 0.5\n", "");
        let msg = format!("{:#}", RunConfig::from_toml(&bad).unwrap_err());
        assert!(msg.contains("drives"), "{msg}");
    }

    #[test]
    fn invalid_value_names_key() {
        let bad = MINIMAL.replace("tau_exc_us = 0.94", "tau_exc_us = -1");
        let msg = format!("{:#}", RunConfig::from_toml(&bad).unwrap_err());
        assert!(msg.contains("emitter.tau_exc_us"), "{msg}");
    }
}
