use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshape::{zeeman_splittings, ZeemanConfig};

/// Upper bound on the number of levels handled by the stack-allocated solver.
pub const MAX_LEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelKind {
    Ground,
    Excited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub kind: LevelKind,
    pub degeneracy: u32,
    /// Energy offset of the level in MHz.
    pub offset_mhz: f64,
}

/// An optically allowed ground/excited pair with its spontaneous branch rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub ground: usize,
    pub excited: usize,
    /// Spontaneous decay rate excited -> ground, in 1/us.
    pub decay_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    levels: Vec<Level>,
    transitions: Vec<Transition>,
    homogeneous_fwhm_mhz: f64,
    excited_lifetime_us: f64,
}

impl LevelScheme {
    pub fn new(
        levels: Vec<Level>,
        transitions: Vec<Transition>,
        homogeneous_fwhm_mhz: f64,
        excited_lifetime_us: f64,
    ) -> Result<Self> {
        if levels.len() < 2 || levels.len() > MAX_LEVELS {
            return Err(Error::param("levels", format!("need 2..={MAX_LEVELS} levels, got {}", levels.len())));
        }
        if levels.iter().any(|l| l.degeneracy == 0) {
            return Err(Error::param("degeneracy", "degeneracies must be positive"));
        }
        if levels.iter().any(|l| !l.offset_mhz.is_finite()) {
            return Err(Error::param("offset_mhz", "level offsets must be finite"));
        }
        if !(homogeneous_fwhm_mhz > 0.0) || !homogeneous_fwhm_mhz.is_finite() {
            return Err(Error::param("homogeneous_fwhm", format!("must be positive, got {homogeneous_fwhm_mhz}")));
        }
        if !(excited_lifetime_us > 0.0) || !excited_lifetime_us.is_finite() {
            return Err(Error::param("tau_exc", format!("must be positive, got {excited_lifetime_us}")));
        }
        if transitions.is_empty() {
            return Err(Error::param("transitions", "at least one transition is required"));
        }
        for t in &transitions {
            let (g, e) = (levels.get(t.ground), levels.get(t.excited));
            match (g, e) {
                (Some(g), Some(e)) if g.kind == LevelKind::Ground && e.kind == LevelKind::Excited => {}
                _ => {
                    return Err(Error::param(
                        "transitions",
                        format!("({}, {}) must connect one ground and one excited level", t.ground, t.excited),
                    ))
                }
            }
            if !(t.decay_rate >= 0.0) || !t.decay_rate.is_finite() {
                return Err(Error::param("decay_rate", "decay rates must be non-negative"));
            }
        }
        Ok(Self { levels, transitions, homogeneous_fwhm_mhz, excited_lifetime_us })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn homogeneous_fwhm_mhz(&self) -> f64 {
        self.homogeneous_fwhm_mhz
    }

    pub fn excited_lifetime_us(&self) -> f64 {
        self.excited_lifetime_us
    }

    /// Total spontaneous rate 1/tau in 1/us.
    pub fn decay_rate(&self) -> f64 {
        1.0 / self.excited_lifetime_us
    }

    /// Driving rate reached on resonance at unit power: 1/(2 tau).
    pub fn saturation_rate(&self) -> f64 {
        0.5 / self.excited_lifetime_us
    }

    /// Optical frequency of `t` (MHz) for a sub-ensemble shifted by `f_inhom`.
    pub fn transition_frequency(&self, t: &Transition, f_inhom: f64) -> f64 {
        f_inhom + self.levels[t.excited].offset_mhz - self.levels[t.ground].offset_mhz
    }

    pub fn is_excited(&self, level: usize) -> bool {
        self.levels[level].kind == LevelKind::Excited
    }

    /// Index of the excited level when there is exactly one.
    pub fn sole_excited(&self) -> Option<usize> {
        let mut found = None;
        for i in 0..self.levels.len() {
            if self.is_excited(i) {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found
    }

    pub fn ground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.levels.len()).filter(|&i| !self.is_excited(i))
    }

    /// Ground populations proportional to degeneracy, excited levels empty.
    pub fn degeneracy_equilibrium(&self) -> Vec<f64> {
        let total: f64 = self.ground_indices().map(|i| self.levels[i].degeneracy as f64).sum();
        self.levels
            .iter()
            .map(|l| match l.kind {
                LevelKind::Ground => l.degeneracy as f64 / total,
                LevelKind::Excited => 0.0,
            })
            .collect()
    }

    /// Same scheme with every degeneracy multiplied by `factor`.
    pub fn with_scaled_degeneracies(&self, factor: u32) -> Self {
        let mut out = self.clone();
        for l in &mut out.levels {
            l.degeneracy *= factor;
        }
        out
    }

    pub fn with_homogeneous_fwhm(&self, fwhm_mhz: f64) -> Result<Self> {
        Self::new(self.levels.clone(), self.transitions.clone(), fwhm_mhz, self.excited_lifetime_us)
    }
}

/// Two ground levels at `-splitting/2` (degeneracy n1) and `+splitting/2` (n3)
/// sharing one excited level (n2). Branching `omega_i = n_i / (n1 + n3) / tau`.
///
/// Level indices: 0 = ground 1, 1 = excited 2, 2 = ground 3.
pub fn build_three_level(
    degeneracies: (u32, u32, u32),
    zero_field_splitting_mhz: f64,
    homogeneous_fwhm_mhz: f64,
    excited_lifetime_us: f64,
) -> Result<LevelScheme> {
    let (n1, n2, n3) = degeneracies;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::param("degeneracy", "degeneracies must be positive"));
    }
    if !(zero_field_splitting_mhz >= 0.0) {
        return Err(Error::param("splitting", format!("must be non-negative, got {zero_field_splitting_mhz}")));
    }
    if !(excited_lifetime_us > 0.0) {
        return Err(Error::param("tau_exc", format!("must be positive, got {excited_lifetime_us}")));
    }
    let omega = 1.0 / excited_lifetime_us;
    let ground_total = (n1 + n3) as f64;
    let half = 0.5 * zero_field_splitting_mhz;
    LevelScheme::new(
        vec![
            Level { kind: LevelKind::Ground, degeneracy: n1, offset_mhz: -half },
            Level { kind: LevelKind::Excited, degeneracy: n2, offset_mhz: 0.0 },
            Level { kind: LevelKind::Ground, degeneracy: n3, offset_mhz: half },
        ],
        vec![
            Transition { ground: 0, excited: 1, decay_rate: n1 as f64 / ground_total * omega },
            Transition { ground: 2, excited: 1, decay_rate: n3 as f64 / ground_total * omega },
        ],
        homogeneous_fwhm_mhz,
        excited_lifetime_us,
    )
}

/// Spin doublets in field: ground pair split by the electron Zeeman term,
/// excited pair by the hole term, all four cross transitions allowed with
/// equal branch rate `1/(2 tau)` and equal degeneracies.
///
/// Level indices: 0 = ground 1, 1 = excited 2, 2 = ground 3, 3 = excited 4.
pub fn build_four_level(
    zeeman: &ZeemanConfig,
    homogeneous_fwhm_mhz: f64,
    excited_lifetime_us: f64,
) -> Result<LevelScheme> {
    let s = zeeman_splittings(zeeman);
    let (dg, de) = (0.5 * s.ground_mhz(), 0.5 * s.excited_mhz());
    if !(excited_lifetime_us > 0.0) {
        return Err(Error::param("tau_exc", format!("must be positive, got {excited_lifetime_us}")));
    }
    let branch = 0.5 / excited_lifetime_us;
    let level = |kind, offset_mhz| Level { kind, degeneracy: 1, offset_mhz };
    LevelScheme::new(
        vec![
            level(LevelKind::Ground, -dg),
            level(LevelKind::Excited, -de),
            level(LevelKind::Ground, dg),
            level(LevelKind::Excited, de),
        ],
        [(0, 1), (0, 3), (2, 1), (2, 3)]
            .into_iter()
            .map(|(ground, excited)| Transition { ground, excited, decay_rate: branch })
            .collect(),
        homogeneous_fwhm_mhz,
        excited_lifetime_us,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn three_level_branching_sums_to_total_rate() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let total: f64 = s.transitions().iter().map(|t| t.decay_rate).sum();
        assert_relative_eq!(total, 1.0 / 0.94, max_relative = 1e-14);
        assert_relative_eq!(s.transitions()[0].decay_rate, 0.25 / 0.94, max_relative = 1e-14);
        // triplet (index 2) sits above the singlet
        assert!(s.levels()[2].offset_mhz > s.levels()[0].offset_mhz);
        assert_eq!(s.levels()[2].degeneracy, 3);
    }

    #[test]
    fn rejected_alternative_swaps_degeneracies() {
        let s = build_three_level((3, 4, 1), 3.848, 0.69, 0.94).unwrap();
        assert_eq!(s.levels()[0].degeneracy, 3);
        assert_eq!(s.levels()[2].degeneracy, 1);
    }

    #[test]
    fn degenerate_three_level() {
        let s = build_three_level((1, 2, 1), 0.0, 0.69, 0.94).unwrap();
        let t = s.transitions();
        assert_eq!(s.transition_frequency(&t[0], 0.0), s.transition_frequency(&t[1], 0.0));
    }

    #[test]
    fn invalid_three_level_inputs() {
        assert!(build_three_level((1, 4, 3), 3.8, 0.69, 0.0).is_err());
        assert!(build_three_level((0, 4, 3), 3.8, 0.69, 0.94).is_err());
        assert!(build_three_level((1, 4, 3), -1.0, 0.69, 0.94).is_err());
    }

    #[test]
    fn four_level_transition_frequencies() {
        let z = ZeemanConfig::new(2.005, 0.91, 213.8).unwrap();
        let s = build_four_level(&z, 600.0, 0.94).unwrap();
        let sp = zeeman_splittings(&z);
        let mut freqs: Vec<f64> = s.transitions().iter().map(|t| s.transition_frequency(t, 0.0)).collect();
        freqs.sort_by(f64::total_cmp);
        let (g, e) = (sp.ground_mhz(), sp.excited_mhz());
        let mut expected = vec![(g + e) / 2.0, (g - e) / 2.0, (e - g) / 2.0, -(g + e) / 2.0];
        expected.sort_by(f64::total_cmp);
        for (a, b) in freqs.iter().zip(&expected) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert!((g - 6000.0).abs() < 10.0);
        assert!((e - 2730.0).abs() < 10.0);
        for t in s.transitions() {
            assert_relative_eq!(t.decay_rate, 0.5 / 0.94);
        }
    }

    #[test]
    fn four_level_zero_field_is_degenerate() {
        let z = ZeemanConfig::new(2.005, 2.55, 0.0).unwrap();
        let s = build_four_level(&z, 600.0, 0.94).unwrap();
        assert!(s.transitions().iter().all(|t| s.transition_frequency(t, 0.0) == 0.0));
    }
}
