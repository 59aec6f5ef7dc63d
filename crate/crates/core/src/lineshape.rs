//! Area-normalized spectral profiles and Zeeman splitting arithmetic.
//!
//! All frequencies are in MHz. GHz only appears in [`Splittings`], which is
//! the I/O-facing result of [`zeeman_splittings`].

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bohr magneton over Planck's constant, in GHz/T.
pub const MU_B_OVER_H_GHZ_PER_T: f64 = 13.996;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Lorentzian,
    Gaussian,
    PseudoVoigt,
}

/// A unit-area line shape parameterized by its full width at half maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    kind: ProfileKind,
    fwhm: f64,
    mix: f64,
}

impl LineProfile {
    pub fn lorentzian(fwhm: f64) -> Result<Self> {
        Self::new(ProfileKind::Lorentzian, fwhm, 0.0)
    }

    pub fn gaussian(fwhm: f64) -> Result<Self> {
        Self::new(ProfileKind::Gaussian, fwhm, 1.0)
    }

    /// Linear mix `mix * gaussian + (1 - mix) * lorentzian`, both with the same FWHM.
    pub fn pseudo_voigt(fwhm: f64, mix: f64) -> Result<Self> {
        Self::new(ProfileKind::PseudoVoigt, fwhm, mix)
    }

    pub fn new(kind: ProfileKind, fwhm: f64, mix: f64) -> Result<Self> {
        if !(fwhm > 0.0) || !fwhm.is_finite() {
            return Err(Error::param("fwhm", format!("must be positive and finite, got {fwhm}")));
        }
        if !(0.0..=1.0).contains(&mix) {
            return Err(Error::param("mix", format!("must lie in [0, 1], got {mix}")));
        }
        Ok(Self { kind, fwhm, mix })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn mix(&self) -> f64 {
        match self.kind {
            ProfileKind::Lorentzian => 0.0,
            ProfileKind::Gaussian => 1.0,
            ProfileKind::PseudoVoigt => self.mix,
        }
    }

    /// Density in 1/MHz at `detuning` MHz from the line centre.
    pub fn value(&self, detuning: f64) -> f64 {
        match self.kind {
            ProfileKind::Lorentzian => lorentzian_density(detuning, self.fwhm),
            ProfileKind::Gaussian => gaussian_density(detuning, self.fwhm),
            ProfileKind::PseudoVoigt => {
                self.mix * gaussian_density(detuning, self.fwhm)
                    + (1.0 - self.mix) * lorentzian_density(detuning, self.fwhm)
            }
        }
    }
}

/// Checked form of [`LineProfile::value`].
pub fn profile_value(kind: ProfileKind, fwhm: f64, mix: f64, detuning: f64) -> Result<f64> {
    Ok(LineProfile::new(kind, fwhm, mix)?.value(detuning))
}

#[inline]
pub fn lorentzian_density(f: f64, fwhm: f64) -> f64 {
    let half = 0.5 * fwhm;
    (half / PI) / (f * f + half * half)
}

#[inline]
pub fn gaussian_density(f: f64, fwhm: f64) -> f64 {
    let sigma = fwhm / (8.0 * LN_2).sqrt();
    (-0.5 * (f / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Lorentzian scaled to 1 at zero detuning.
#[inline]
pub fn lorentzian_peak_normalized(f: f64, fwhm: f64) -> f64 {
    let x = 2.0 * f / fwhm;
    1.0 / (1.0 + x * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanConfig {
    pub g_electron: f64,
    pub g_hole: f64,
    pub field_mt: f64,
}

impl ZeemanConfig {
    pub fn new(g_electron: f64, g_hole: f64, field_mt: f64) -> Result<Self> {
        if !(g_electron > 0.0) {
            return Err(Error::param("g_e", format!("must be positive, got {g_electron}")));
        }
        if !(g_hole > 0.0) {
            return Err(Error::param("g_h", format!("must be positive, got {g_hole}")));
        }
        if !(field_mt >= 0.0) || !field_mt.is_finite() {
            return Err(Error::param("B", format!("must be non-negative, got {field_mt}")));
        }
        Ok(Self { g_electron, g_hole, field_mt })
    }
}

/// Splittings in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splittings {
    pub ground: f64,
    pub excited: f64,
    pub bc: f64,
    pub ad: f64,
}

impl Splittings {
    pub fn ground_mhz(&self) -> f64 {
        self.ground * 1e3
    }

    pub fn excited_mhz(&self) -> f64 {
        self.excited * 1e3
    }
}

pub fn zeeman_splittings(z: &ZeemanConfig) -> Splittings {
    let tesla = z.field_mt * 1e-3;
    let ground = z.g_electron * MU_B_OVER_H_GHZ_PER_T * tesla;
    let excited = z.g_hole * MU_B_OVER_H_GHZ_PER_T * tesla;
    Splittings { ground, excited, bc: (excited - ground).abs(), ad: ground + excited }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Integral over the whole real line via f = (w/2) tan(theta), Simpson in theta.
    fn integrate_real_line(p: &LineProfile) -> f64 {
        let n = 400_000;
        let half = 0.5 * p.fwhm();
        let (a, b) = (-0.5 * PI, 0.5 * PI);
        let h = (b - a) / n as f64;
        let g = |theta: f64| {
            let c = theta.cos();
            if c.abs() < 1e-300 {
                return 0.0;
            }
            p.value(half * theta.tan()) * half / (c * c)
        };
        let mut sum = g(a) + g(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * g(a + k as f64 * h);
        }
        sum * h / 3.0
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + k as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn lorentzian_peak_and_half_width() {
        let p = LineProfile::lorentzian(1.0).unwrap();
        assert_relative_eq!(p.value(0.0), 2.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(p.value(0.5), 1.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(p.value(-0.5), 1.0 / PI, max_relative = 1e-15);
    }

    #[test]
    fn gaussian_half_width_matches_fwhm() {
        let p = LineProfile::gaussian(3.0).unwrap();
        assert_relative_eq!(p.value(1.5), 0.5 * p.value(0.0), max_relative = 1e-13);
    }

    #[test]
    fn pseudo_voigt_unit_area() {
        let p = LineProfile::pseudo_voigt(22.7e3, 0.37).unwrap();
        let area = integrate_real_line(&p);
        assert!((area - 1.0).abs() < 1e-6, "area = {area}");
    }

    #[test]
    fn truncated_window_misses_only_the_lorentzian_tail() {
        // Over +-50 FWHM the Gaussian part is complete; the Lorentzian part
        // loses 1 - (2/pi) atan(100) of its mass.
        let p = LineProfile::pseudo_voigt(22.7e3, 0.37).unwrap();
        let w = 50.0 * p.fwhm();
        let area = simpson(|f| p.value(f), -w, w, 2_000_000);
        let expected = 0.37 + 0.63 * (2.0 / PI) * 100f64.atan();
        assert!((area - expected).abs() < 1e-6, "area = {area}, expected {expected}");
    }

    #[test]
    fn all_kinds_unit_area() {
        for p in [
            LineProfile::lorentzian(0.69).unwrap(),
            LineProfile::gaussian(39.6e3).unwrap(),
            LineProfile::pseudo_voigt(33.0, 0.8).unwrap(),
        ] {
            let area = integrate_real_line(&p);
            assert!((area - 1.0).abs() < 1e-6, "{p:?}: {area}");
        }
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(LineProfile::lorentzian(0.0).is_err());
        assert!(LineProfile::gaussian(-1.0).is_err());
        assert!(LineProfile::pseudo_voigt(1.0, 1.2).is_err());
        assert!(profile_value(ProfileKind::Lorentzian, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn splittings_at_working_field() {
        let s = zeeman_splittings(&ZeemanConfig::new(2.005, 0.91, 213.8).unwrap());
        assert!((s.ground - 6.0).abs() < 0.01, "{s:?}");
        assert!((s.excited - 2.73).abs() < 0.01, "{s:?}");
        assert_relative_eq!(s.ad, s.ground + s.excited);
        assert_relative_eq!(s.bc, s.ground - s.excited);
        let s2 = zeeman_splittings(&ZeemanConfig::new(2.005, 2.55, 213.8).unwrap());
        assert!((s2.excited - 7.65).abs() < 0.03, "{s2:?}");
    }

    #[test]
    fn zero_field_has_no_splitting() {
        let s = zeeman_splittings(&ZeemanConfig::new(2.005, 2.55, 0.0).unwrap());
        assert_eq!((s.ground, s.excited, s.bc, s.ad), (0.0, 0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn profiles_are_even(fwhm in 1e-3f64..1e5, mix in 0.0f64..=1.0, f in -1e6f64..1e6) {
            let p = LineProfile::pseudo_voigt(fwhm, mix).unwrap();
            let (a, b) = (p.value(f), p.value(-f));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        }

        #[test]
        fn mix_endpoints_reduce(fwhm in 1e-3f64..1e5, f in -1e4f64..1e4) {
            let l = LineProfile::lorentzian(fwhm).unwrap().value(f);
            let g = LineProfile::gaussian(fwhm).unwrap().value(f);
            prop_assert_eq!(LineProfile::pseudo_voigt(fwhm, 0.0).unwrap().value(f), l);
            prop_assert_eq!(LineProfile::pseudo_voigt(fwhm, 1.0).unwrap().value(f), g);
        }

        #[test]
        fn splittings_linear_in_field(ge in 0.1f64..4.0, gh in 0.1f64..4.0, b in 0.0f64..2000.0, k in 0.0f64..10.0) {
            let s1 = zeeman_splittings(&ZeemanConfig::new(ge, gh, b).unwrap());
            let s2 = zeeman_splittings(&ZeemanConfig::new(ge, gh, k * b).unwrap());
            for (x, y) in [(s1.ground, s2.ground), (s1.excited, s2.excited), (s1.bc, s2.bc), (s1.ad, s2.ad)] {
                prop_assert!((k * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
