//! Linewidth, Purcell and visibility arithmetic for two-emitter interference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WAVELENGTH_NM: f64 = 1326.0;
pub const DEFAULT_REFRACTIVE_INDEX: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterOpticalParams {
    pub tau_us: f64,
    /// Fraction of emission into the zero-phonon line.
    pub eta_zpl: f64,
    /// Instantaneous homogeneous FWHM without a cavity.
    pub homogeneous_mhz: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default = "default_index")]
    pub refractive_index: f64,
    /// Multiplies the cavity-enhanced part of the zero-phonon rate.
    #[serde(default = "one")]
    pub radiative_efficiency: f64,
}

fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}

fn default_index() -> f64 {
    DEFAULT_REFRACTIVE_INDEX
}

fn one() -> f64 {
    1.0
}

impl EmitterOpticalParams {
    pub fn new(tau_us: f64, eta_zpl: f64, homogeneous_mhz: f64) -> Result<Self> {
        let p = Self {
            tau_us,
            eta_zpl,
            homogeneous_mhz,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
            refractive_index: DEFAULT_REFRACTIVE_INDEX,
            radiative_efficiency: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_linewidth(&self, homogeneous_mhz: f64) -> Result<Self> {
        let p = Self { homogeneous_mhz, ..self.clone() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_us > 0.0) || !self.tau_us.is_finite() {
            return Err(Error::param("tau", format!("must be positive, got {}", self.tau_us)));
        }
        if !(self.eta_zpl > 0.0 && self.eta_zpl < 1.0) {
            return Err(Error::param("eta_zpl", format!("must lie in (0, 1), got {}", self.eta_zpl)));
        }
        if !(self.homogeneous_mhz > 0.0) || !self.homogeneous_mhz.is_finite() {
            return Err(Error::param(
                "homogeneous_linewidth",
                format!("must be positive, got {}", self.homogeneous_mhz),
            ));
        }
        if !(self.wavelength_nm > 0.0) || !(self.refractive_index > 0.0) {
            return Err(Error::param("wavelength", "wavelength and refractive index must be positive"));
        }
        if !(self.radiative_efficiency > 0.0 && self.radiative_efficiency <= 1.0) {
            return Err(Error::param(
                "radiative_efficiency",
                format!("must lie in (0, 1], got {}", self.radiative_efficiency),
            ));
        }
        Ok(())
    }

    /// Measured linewidth narrower than the lifetime allows. Not an error:
    /// measurement uncertainty can put it there.
    pub fn below_lifetime_limit(&self) -> bool {
        self.homogeneous_mhz < lifetime_limited_linewidth(self.tau_us)
    }

    /// Pure-dephasing width, floored at zero.
    pub fn dephasing_mhz(&self) -> f64 {
        (self.homogeneous_mhz - lifetime_limited_linewidth(self.tau_us)).max(0.0)
    }
}

/// `1 / (2 pi tau)`, MHz for tau in us.
pub fn lifetime_limited_linewidth(tau_us: f64) -> f64 {
    1.0 / (2.0 * PI * tau_us)
}

/// Excited-state lifetime with the zero-phonon rate enhanced by `1 + F_P`.
pub fn purcell_lifetime(purcell: f64, tau_us: f64, eta_zpl: f64) -> Result<f64> {
    purcell_lifetime_with(purcell, tau_us, eta_zpl, 1.0)
}

fn purcell_lifetime_with(purcell: f64, tau_us: f64, eta_zpl: f64, efficiency: f64) -> Result<f64> {
    if !(purcell >= 0.0) || !purcell.is_finite() {
        return Err(Error::param("purcell", format!("must be non-negative, got {purcell}")));
    }
    if !(tau_us > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau_us}")));
    }
    if !(eta_zpl > 0.0 && eta_zpl < 1.0) {
        return Err(Error::param("eta_zpl", format!("must lie strictly between 0 and 1, got {eta_zpl}")));
    }
    let zpl = (1.0 + efficiency * purcell) * eta_zpl / tau_us;
    let psb = (1.0 - eta_zpl) / tau_us;
    Ok(1.0 / (zpl + psb))
}

/// `G_life / (G_life + G_pd)` with the lifetime shortened by the cavity and
/// the dephasing width held fixed.
pub fn visibility(p: &EmitterOpticalParams, purcell: f64) -> Result<f64> {
    p.validate()?;
    let tau = purcell_lifetime_with(purcell, p.tau_us, p.eta_zpl, p.radiative_efficiency)?;
    Ok(visibility_from_widths(lifetime_limited_linewidth(tau), p.dephasing_mhz()))
}

fn visibility_from_widths(life_mhz: f64, dephasing_mhz: f64) -> f64 {
    life_mhz / (life_mhz + dephasing_mhz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurcellRequirement {
    pub purcell: f64,
    /// The bare emitter already reaches the target.
    pub already_met: bool,
}

/// Smallest Purcell factor reaching `target` visibility.
pub fn required_purcell(p: &EmitterOpticalParams, target: f64) -> Result<PurcellRequirement> {
    p.validate()?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param("target_visibility", format!("must lie in (0, 1), got {target}")));
    }
    let bare = visibility(p, 0.0)?;
    if target <= bare {
        return Ok(PurcellRequirement { purcell: 0.0, already_met: true });
    }
    // V is linear in the total decay rate once inverted for G_life.
    let life = target / (1.0 - target) * p.dephasing_mhz();
    let rate = 2.0 * PI * life;
    let purcell = (rate * p.tau_us - 1.0) / (p.radiative_efficiency * p.eta_zpl);
    Ok(PurcellRequirement { purcell: purcell.max(0.0), already_met: false })
}

/// `Q = 2 pi^2 F_P / 3` for a mode volume of `(lambda/n)^3 / 2`.
pub fn q_from_purcell(purcell: f64) -> Result<f64> {
    if !(purcell > 0.0) || !purcell.is_finite() {
        return Err(Error::param("purcell", format!("must be positive, got {purcell}")));
    }
    Ok(2.0 * PI * PI * purcell / 3.0)
}

/// General Purcell relation `F_P = 3/(4 pi^2) (lambda/n)^3 Q / V_mode`,
/// solved for Q with the mode volume in cubic nm.
pub fn q_for_mode_volume(purcell: f64, wavelength_nm: f64, index: f64, mode_volume_nm3: f64) -> Result<f64> {
    if !(mode_volume_nm3 > 0.0) {
        return Err(Error::param("mode_volume", "must be positive"));
    }
    let cube = (wavelength_nm / index).powi(3);
    Ok(q_from_purcell(purcell)? * 2.0 * mode_volume_nm3 / cube)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityPlan {
    pub purcell: f64,
    pub q: f64,
    pub tau_cav_ns: f64,
    pub visibility: f64,
    pub already_met: bool,
}

/// Purcell factor, Q and cavity lifetime needed for `target`.
pub fn plan_cavity(p: &EmitterOpticalParams, target: f64) -> Result<CavityPlan> {
    let req = required_purcell(p, target)?;
    let q = if req.purcell > 0.0 { q_from_purcell(req.purcell)? } else { 0.0 };
    let tau = purcell_lifetime_with(req.purcell, p.tau_us, p.eta_zpl, p.radiative_efficiency)?;
    Ok(CavityPlan {
        purcell: req.purcell,
        q,
        tau_cav_ns: tau * 1e3,
        visibility: visibility(p, req.purcell)?,
        already_met: req.already_met,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub homogeneous_mhz: f64,
    pub bare_visibility: f64,
    pub below_lifetime_limit: bool,
    pub plan: CavityPlan,
}

pub fn plan_table(base: &EmitterOpticalParams, linewidths_mhz: &[f64], target: f64) -> Result<Vec<PlanRow>> {
    linewidths_mhz
        .iter()
        .map(|&w| {
            let p = base.with_linewidth(w)?;
            Ok(PlanRow {
                homogeneous_mhz: w,
                bare_visibility: visibility(&p, 0.0)?,
                below_lifetime_limit: p.below_lifetime_limit(),
                plan: plan_cavity(&p, target)?,
            })
        })
        .collect()
}
