use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Run conditions attached to a scan. Keys keep their file order so that a
/// scan read from disk writes back byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub const TEMPERATURE_K: &'static str = "temperature_K";
    pub const FIELD_MT: &'static str = "field_mT";
    pub const PUMP_POWER: &'static str = "pump_power";
    pub const PROBE_POWER: &'static str = "probe_power";
    pub const PUMP_DETUNING_MHZ: &'static str = "pump_detuning_MHz";

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.trim().parse().ok())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A signal sampled on a strictly increasing detuning grid (MHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScan {
    pub detuning_mhz: Vec<f64>,
    pub signal: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl SpectrumScan {
    pub fn new(detuning_mhz: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        let scan = Self { detuning_mhz, signal, sigma: None, metadata: Metadata::default() };
        scan.validate()?;
        Ok(scan)
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        self.sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detuning_mhz.len() != self.signal.len() {
            return Err(Error::Data(format!(
                "{} detunings but {} signal values",
                self.detuning_mhz.len(),
                self.signal.len()
            )));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.signal.len() {
                return Err(Error::Data("sigma length differs from signal length".into()));
            }
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Data("sigma values must be positive and finite".into()));
            }
        }
        if let Some(i) = self.signal.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite signal at index {i}")));
        }
        check_strictly_increasing(&self.detuning_mhz)
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn sigma_at(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| s[i])
    }

    /// Reverses the detuning axis: `f -> -f`.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.detuning_mhz = self.detuning_mhz.iter().rev().map(|f| -f).collect();
        out.signal.reverse();
        if let Some(s) = out.sigma.as_mut() {
            s.reverse();
        }
        out
    }

    /// Pointwise `self - other` on an identical grid.
    pub fn subtract(&self, other: &SpectrumScan) -> Result<Self> {
        if self.detuning_mhz != other.detuning_mhz {
            return Err(Error::GridMismatch("scans are sampled on different grids".into()));
        }
        let mut out = self.clone();
        for (s, o) in out.signal.iter_mut().zip(&other.signal) {
            *s -= o;
        }
        Ok(out)
    }
}

pub(crate) fn check_strictly_increasing(grid: &[f64]) -> Result<()> {
    if let Some(i) = grid.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite grid value at index {i}")));
    }
    match grid.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::Data(format!("grid not strictly increasing at index {}", i + 1))),
        None => Ok(()),
    }
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|k| if k == n - 1 { stop } else { start + k as f64 * step }).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone_grid() {
        assert!(SpectrumScan::new(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(SpectrumScan::new(vec![0.0, 1.0], vec![0.0; 3]).is_err());
        assert!(SpectrumScan::new(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn mirror_twice_is_identity() {
        let s = SpectrumScan::new(vec![-1.0, 0.5, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mirrored().detuning_mhz, vec![-2.0, -0.5, 1.0]);
        assert_eq!(s.mirrored().mirrored(), s);
    }

    #[test]
    fn metadata_keeps_insertion_order() {
        let mut m = Metadata::default();
        m.set("b", 1);
        m.set("a", 2.5);
        m.set("b", 3);
        let keys: Vec<_> = m.iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["b", "a"]);
        assert_eq!(m.get_f64("b"), Some(3.0));
    }
}
