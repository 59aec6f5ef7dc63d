//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Spectra come back as plain arrays of signal values on the requested
//! probe grid, with the probe-only background subtracted.

use holeburn_core::lineshape::{LineProfile, ZeemanConfig};
use holeburn_core::planner::{plan_table, EmitterOpticalParams};
use holeburn_core::rate::{
    build_four_level, build_three_level, DriveField, HoleBurning, InhomogeneousModel, LevelScheme, Quadrature,
};
use holeburn_core::spectrum::linspace;
use holeburn_core::Result;
use wasm_bindgen::prelude::*;

/// Coarser than the library default; enough for plotting at interactive rates.
const DEMO_QUADRATURE: Quadrature =
    Quadrature { half_width_fwhm: 5.0, base_points: 801, rel_tol: 1e-4, max_doublings: 0 };

fn burnt(scheme: &LevelScheme, inhom: InhomogeneousModel, pump: f64, probe: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let mut hb = HoleBurning::new(scheme, inhom);
    hb.quadrature = DEMO_QUADRATURE;
    let with = hb.spectrum_fixed(&DriveField::pump(0.0, pump)?, probe, grid, 0)?;
    let without = hb.spectrum_fixed(&DriveField::pump(0.0, 0.0)?, probe, grid, 0)?;
    Ok(with.subtract(&without)?.signal)
}

#[allow(clippy::too_many_arguments)]
pub fn three_level(
    n: [u32; 3],
    splitting_mhz: f64,
    homogeneous_mhz: f64,
    tau_us: f64,
    inhom_fwhm_mhz: f64,
    pump: f64,
    probe: f64,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let scheme = build_three_level((n[0], n[1], n[2]), splitting_mhz, homogeneous_mhz, tau_us)?;
    let inhom = InhomogeneousModel::new(LineProfile::pseudo_voigt(inhom_fwhm_mhz, 0.5)?, 0.0);
    burnt(&scheme, inhom, pump, probe, grid)
}

#[allow(clippy::too_many_arguments)]
pub fn four_level(
    g_electron: f64,
    g_hole: f64,
    field_mt: f64,
    homogeneous_mhz: f64,
    tau_us: f64,
    inhom_fwhm_mhz: f64,
    pump: f64,
    probe: f64,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let scheme = build_four_level(&ZeemanConfig::new(g_electron, g_hole, field_mt)?, homogeneous_mhz, tau_us)?;
    let inhom = InhomogeneousModel::new(LineProfile::gaussian(inhom_fwhm_mhz)?, 0.0);
    burnt(&scheme, inhom, pump, probe, grid)
}

/// Rows of `[linewidth, bare visibility, Purcell factor, Q, cavity lifetime ns]`, flattened.
pub fn plan(tau_us: f64, eta_zpl: f64, linewidths_mhz: &[f64], target: f64) -> Result<Vec<f64>> {
    let base = EmitterOpticalParams::new(tau_us, eta_zpl, linewidths_mhz.first().copied().unwrap_or(1.0))?;
    Ok(plan_table(&base, linewidths_mhz, target)?
        .into_iter()
        .flat_map(|r| [r.homogeneous_mhz, r.bare_visibility, r.plan.purcell, r.plan.q, r.plan.tau_cav_ns])
        .collect())
}

fn js(e: holeburn_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    linspace(start, stop, points)
}

#[wasm_bindgen(js_name = threeLevelSpectrum)]
#[allow(clippy::too_many_arguments)]
pub fn three_level_spectrum(
    n1: u32,
    n2: u32,
    n3: u32,
    splitting_mhz: f64,
    homogeneous_mhz: f64,
    tau_us: f64,
    inhom_fwhm_mhz: f64,
    pump: f64,
    probe: f64,
    grid: &[f64],
) -> std::result::Result<Vec<f64>, JsError> {
    three_level([n1, n2, n3], splitting_mhz, homogeneous_mhz, tau_us, inhom_fwhm_mhz, pump, probe, grid).map_err(js)
}

#[wasm_bindgen(js_name = fourLevelSpectrum)]
#[allow(clippy::too_many_arguments)]
pub fn four_level_spectrum(
    g_electron: f64,
    g_hole: f64,
    field_mt: f64,
    homogeneous_mhz: f64,
    tau_us: f64,
    inhom_fwhm_mhz: f64,
    pump: f64,
    probe: f64,
    grid: &[f64],
) -> std::result::Result<Vec<f64>, JsError> {
    four_level(g_electron, g_hole, field_mt, homogeneous_mhz, tau_us, inhom_fwhm_mhz, pump, probe, grid).map_err(js)
}

#[wasm_bindgen(js_name = planTable)]
pub fn plan_rows(
    tau_us: f64,
    eta_zpl: f64,
    linewidths_mhz: &[f64],
    target: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    plan(tau_us, eta_zpl, linewidths_mhz, target).map_err(js)
}
