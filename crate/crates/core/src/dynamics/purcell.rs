use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major samples over a waveguide cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub dx_nm: f64,
    pub dy_nm: f64,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, dx_nm: f64, dy_nm: f64, values: Vec<f64>) -> Result<Self> {
        let g = Self { nx, ny, dx_nm, dy_nm, values };
        g.validate()?;
        Ok(g)
    }

    /// Samples `f(x, y)` at cell positions `(i dx, j dy)` offset so the grid is centred on 0.
    pub fn from_fn(nx: usize, ny: usize, dx_nm: f64, dy_nm: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (cx, cy) = (0.5 * (nx as f64 - 1.0), 0.5 * (ny as f64 - 1.0));
        let values = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| f((i as f64 - cx) * dx_nm, (j as f64 - cy) * dy_nm))
            .collect();
        Self::new(nx, ny, dx_nm, dy_nm, values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Data("map must have at least one cell".into()));
        }
        if self.values.len() != self.nx * self.ny {
            return Err(Error::Data(format!(
                "map declares {}x{} cells but holds {} values",
                self.nx,
                self.ny,
                self.values.len()
            )));
        }
        if !(self.dx_nm > 0.0) || !(self.dy_nm > 0.0) {
            return Err(Error::Data("cell size must be positive".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data(format!("map value {i} is negative or non-finite")));
        }
        Ok(())
    }

    fn same_shape(&self, other: &Grid2) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx_nm == other.dx_nm && self.dy_nm == other.dy_nm
    }
}

/// Purcell factor, emission coupling and excitation intensity on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMaps {
    pub purcell: Grid2,
    pub coupling: Grid2,
    pub intensity: Grid2,
}

impl FieldMaps {
    pub fn new(purcell: Grid2, coupling: Grid2, intensity: Grid2) -> Result<Self> {
        let m = Self { purcell, coupling, intensity };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for g in [&self.purcell, &self.coupling, &self.intensity] {
            g.validate()?;
        }
        if !self.purcell.same_shape(&self.coupling) || !self.purcell.same_shape(&self.intensity) {
            return Err(Error::GridMismatch("field maps have different shapes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitationProfile {
    /// Emitters excited in proportion to the mode intensity.
    #[default]
    Mode,
    Uniform,
}

/// Coupling-weighted mean Purcell factor, `sum(F eta w) / sum(eta w)` with
/// `w` the excitation intensity or 1.
pub fn ensemble_purcell(maps: &FieldMaps, excitation: ExcitationProfile) -> Result<f64> {
    maps.validate()?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..maps.purcell.values.len() {
        let w = match excitation {
            ExcitationProfile::Mode => maps.intensity.values[i],
            ExcitationProfile::Uniform => 1.0,
        };
        let ew = maps.coupling.values[i] * w;
        num += maps.purcell.values[i] * ew;
        den += ew;
    }
    if den == 0.0 {
        return Err(Error::Data("all weights are zero".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gauss(sx: f64, sy: f64, peak: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| peak * (-0.5 * (x * x / (sx * sx) + y * y / (sy * sy))).exp()
    }

    #[test]
    fn separable_gaussians_match_closed_form() {
        let (n, d) = (801, 2.0);
        let (fx, fy, ex, ey, ix, iy) = (60.0, 40.0, 90.0, 70.0, 50.0, 80.0);
        let f = Grid2::from_fn(n, n, d, d, gauss(fx, fy, 3.0)).unwrap();
        let e = Grid2::from_fn(n, n, d, d, gauss(ex, ey, 0.4)).unwrap();
        let i = Grid2::from_fn(n, n, d, d, gauss(ix, iy, 1.0)).unwrap();
        let maps = FieldMaps::new(f, e, i).unwrap();
        // per axis: integral of three Gaussians over integral of two
        let ratio = |a: f64, b: f64, c: f64| {
            let (pa, pb, pc) = (a.powi(-2), b.powi(-2), c.powi(-2));
            ((pb + pc) / (pa + pb + pc)).sqrt()
        };
        let mode = 3.0 * ratio(fx, ex, ix) * ratio(fy, ey, iy);
        assert_relative_eq!(ensemble_purcell(&maps, ExcitationProfile::Mode).unwrap(), mode, max_relative = 1e-6);
        let uni = 3.0
            * (ex.powi(-2) / (fx.powi(-2) + ex.powi(-2))).sqrt()
            * (ey.powi(-2) / (fy.powi(-2) + ey.powi(-2))).sqrt();
        assert_relative_eq!(ensemble_purcell(&maps, ExcitationProfile::Uniform).unwrap(), uni, max_relative = 1e-6);
    }

    #[test]
    fn shape_and_weight_errors() {
        let a = Grid2::new(2, 2, 1.0, 1.0, vec![1.0; 4]).unwrap();
        let b = Grid2::new(4, 1, 1.0, 1.0, vec![1.0; 4]).unwrap();
        assert!(FieldMaps::new(a.clone(), b, a.clone()).is_err());
        assert!(Grid2::new(2, 2, 1.0, 1.0, vec![1.0; 3]).is_err());
        assert!(Grid2::new(2, 2, 1.0, 1.0, vec![1.0, -1.0, 0.0, 0.0]).is_err());
        let zero = Grid2::new(2, 2, 1.0, 1.0, vec![0.0; 4]).unwrap();
        let maps = FieldMaps::new(a.clone(), zero, a).unwrap();
        assert!(ensemble_purcell(&maps, ExcitationProfile::Uniform).is_err());
    }

    proptest! {
        #[test]
        fn uniform_purcell_passes_through(p in 0.0f64..50.0, seed in proptest::collection::vec(0.01f64..1.0, 12)) {
            let f = Grid2::new(3, 4, 10.0, 10.0, vec![p; 12]).unwrap();
            let e = Grid2::new(3, 4, 10.0, 10.0, seed.clone()).unwrap();
            let i = Grid2::new(3, 4, 10.0, 10.0, seed.iter().rev().copied().collect()).unwrap();
            let maps = FieldMaps::new(f, e, i).unwrap();
            for ex in [ExcitationProfile::Mode, ExcitationProfile::Uniform] {
                prop_assert!((ensemble_purcell(&maps, ex).unwrap() - p).abs() <= 1e-12 * p.max(1.0));
            }
        }
    }
}
