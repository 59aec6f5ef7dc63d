use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use holeburn_core::dynamics::{
    ensemble_purcell, fit_lifetime, fit_t1, polarization_ratio, simulate_t1_sequence, ExcitationProfile, FieldMaps,
    T1Protocol,
};
use holeburn_core::fit::{global_fit, FitOptions, FitResult, Parameter};
use holeburn_core::holeburn::{extract_features, fit_saturation, FeatureResult, SpectrumFamily};
use holeburn_core::io;
use holeburn_core::lineshape::ZeemanConfig;
use holeburn_core::planner::{plan_table, EmitterOpticalParams, PlanRow};
use holeburn_core::rate::{average_scans, build_four_level, DriveField, HoleBurning};
use holeburn_core::spectrum::{linspace, Metadata, SpectrumScan};
use holeburn_core::synth::{add_relative_noise, derive_seed, normal_samples, poisson_decay};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ModelKind, RunConfig};
use crate::output;

/// What a command produced: the JSON document printed on stdout and any
/// text meant for a terminal instead.
pub struct Report {
    pub json: Value,
    pub text: Option<String>,
}

impl Report {
    fn json(v: impl Serialize) -> Result<Self> {
        Ok(Self { json: serde_json::to_value(v)?, text: None })
    }
}

fn require_config(config: Option<&Path>) -> Result<RunConfig> {
    let path = config.context("--config is required for this command")?;
    RunConfig::load(path)
}

/// Far-wing level mapped to 0 and the deepest point to -1.
fn normalize(signal: &mut [f64]) {
    let n = signal.len();
    let far = 0.5 * (signal[0] + signal[n - 1]);
    let min = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let depth = far - min;
    if depth > 0.0 {
        for v in signal.iter_mut() {
            *v = (*v - far) / depth;
        }
    }
}

/// Spectrum for one pump drive, averaged over orientations.
pub fn simulate_spectrum(cfg: &RunConfig, pump: &DriveField) -> Result<SpectrumScan> {
    let inhom = cfg.inhomogeneous()?;
    let grid = cfg.grid();
    let q = cfg.quadrature.quadrature();
    let one = |power: f64| -> Result<SpectrumScan> {
        let drive = DriveField::pump(pump.detuning_mhz, power)?;
        let mut scans = Vec::new();
        for (scheme, weight) in cfg.schemes()? {
            let mut hb = HoleBurning::new(&scheme, inhom);
            hb.quadrature = q;
            let s = match cfg.quadrature.fixed_level {
                Some(level) => hb.spectrum_fixed(&drive, cfg.scan.probe_power_wsat, &grid, level)?,
                None => hb.spectrum(&drive, cfg.scan.probe_power_wsat, &grid)?,
            };
            scans.push((s, weight));
        }
        Ok(average_scans(&scans)?)
    };
    let mut scan = one(pump.power)?;
    if cfg.scan.subtract_probe_only {
        let base = one(0.0)?;
        scan = scan.subtract(&base)?;
    }
    if cfg.scan.normalize {
        normalize(&mut scan.signal);
    }
    scan.metadata.set(Metadata::PUMP_POWER, pump.power);
    scan.metadata.set(Metadata::PROBE_POWER, cfg.scan.probe_power_wsat);
    scan.metadata.set(Metadata::PUMP_DETUNING_MHZ, pump.detuning_mhz);
    if let (ModelKind::FourLevel, Some(b)) = (cfg.model, cfg.emitter.field_mt) {
        scan.metadata.set(Metadata::FIELD_MT, b);
    }
    Ok(scan)
}

#[derive(Serialize)]
struct SimulatedScan {
    file: String,
    pump_power_wsat: f64,
    pump_detuning_mhz: f64,
    features: FeatureResult,
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: u64) -> Result<Report> {
    let cfg = require_config(config)?;
    let name = cfg.name.clone().unwrap_or_else(|| "scan".into());
    let mut written = Vec::new();
    for (k, d) in cfg.drives.iter().enumerate() {
        info!("simulating drive {k}: {} W_sat at {} MHz", d.power_wsat, d.detuning_mhz);
        let pump = DriveField::pump(d.detuning_mhz, d.power_wsat)?;
        let mut scan = simulate_spectrum(&cfg, &pump)?;
        if cfg.scan.noise_rel > 0.0 {
            scan = add_relative_noise(&scan, cfg.scan.noise_rel, derive_seed(seed, k as u64))?;
        }
        let file = format!("{name}_{k}.csv");
        output::write(out, &file, &io::format_scan(&scan))?;
        written.push(SimulatedScan {
            file,
            pump_power_wsat: d.power_wsat,
            pump_detuning_mhz: d.detuning_mhz,
            features: extract_features(&scan)?,
        });
    }
    let doc = json!({ "config": cfg, "seed": seed, "scans": written });
    output::write(out, &format!("{name}.json"), &output::to_json(&doc)?)?;
    Report::json(doc)
}

#[derive(Serialize)]
struct Comparison {
    degeneracies: [u32; 3],
    chi_square: f64,
    converged: bool,
}

fn fit_parameters(cfg: &RunConfig) -> Vec<Parameter> {
    let start = [
        cfg.emitter.homogeneous_fwhm_mhz,
        cfg.emitter.zero_field_splitting_mhz.unwrap_or(0.0),
        cfg.inhomogeneous.mix.unwrap_or(0.5),
        cfg.inhomogeneous.fwhm_mhz,
    ];
    let mut params = SpectrumFamily::parameters(start);
    if let Some(f) = &cfg.fit {
        for pc in &f.parameters {
            if let Some(p) = params.iter_mut().find(|p| p.name == pc.name) {
                p.value = pc.value;
                if let Some(lo) = pc.lo {
                    p.lo = lo;
                }
                if let Some(hi) = pc.hi {
                    p.hi = hi;
                }
                if pc.fixed {
                    *p = p.clone().fixed();
                }
            }
        }
    }
    params
}

fn family_for(cfg: &RunConfig, degeneracies: [u32; 3], scans: &[SpectrumScan]) -> Result<SpectrumFamily> {
    let mut pumps = Vec::new();
    let mut probe = None;
    for (k, s) in scans.iter().enumerate() {
        pumps.push(
            s.metadata
                .get_f64(Metadata::PUMP_POWER)
                .with_context(|| format!("scan {k}: metadata `{}` is required for fitting", Metadata::PUMP_POWER))?,
        );
        if let Some(p) = s.metadata.get_f64(Metadata::PROBE_POWER) {
            probe.get_or_insert(p);
        }
    }
    let [a, b, c] = degeneracies;
    let mut fam =
        SpectrumFamily::new((a, b, c), cfg.emitter.tau_exc_us, pumps, probe.unwrap_or(cfg.scan.probe_power_wsat));
    fam.quadrature = cfg.quadrature.quadrature();
    fam.level = cfg.quadrature.fixed_level.unwrap_or(0);
    fam.inhom_centre_mhz = cfg.inhomogeneous.centre_mhz;
    fam.pump_detuning_mhz = cfg.drives.first().map_or(0.0, |d| d.detuning_mhz);
    Ok(fam)
}

fn run_fit(cfg: &RunConfig, degeneracies: [u32; 3], scans: &[SpectrumScan]) -> Result<FitResult> {
    let fam = family_for(cfg, degeneracies, scans)?;
    let mut opts = FitOptions::default();
    if let Some(n) = cfg.fit.as_ref().and_then(|f| f.max_iterations) {
        opts.max_iterations = n;
    }
    Ok(global_fit(&fam, scans, &fit_parameters(cfg), &opts)?)
}

pub fn fit(config: Option<&Path>, out: &Path, files: &[PathBuf]) -> Result<Report> {
    let cfg = require_config(config)?;
    if files.is_empty() {
        bail!("at least one scan file is required");
    }
    let scans = files.iter().map(|f| io::read_scan(f)).collect::<holeburn_core::Result<Vec<_>>>()?;
    let degeneracies = cfg.emitter.degeneracies.context("emitter.degeneracies: required for fitting")?;
    let r = run_fit(&cfg, degeneracies, &scans)?;
    for (k, s) in scans.iter().enumerate() {
        output::write(out, &format!("fit_{k}.csv"), &io::format_curve(&s.detuning_mhz, &s.signal, &r.model[k]))?;
    }
    let mut comparisons = vec![Comparison { degeneracies, chi_square: r.chi_square, converged: r.converged }];
    for &alt in cfg.fit.iter().flat_map(|f| &f.compare_degeneracies) {
        info!("fitting alternative degeneracies {alt:?}");
        let a = run_fit(&cfg, alt, &scans)?;
        comparisons.push(Comparison { degeneracies: alt, chi_square: a.chi_square, converged: a.converged });
    }
    let doc = json!({
        "datasets": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        "degeneracies": degeneracies,
        "parameters": r.parameters,
        "chi_square": r.chi_square,
        "dof": r.dof,
        "reduced_chi_square": r.reduced_chi_square(),
        "iterations": r.iterations,
        "converged": r.converged,
        "comparisons": comparisons,
    });
    output::write(out, "fit.json", &output::to_json(&doc)?)?;
    if !r.converged {
        bail!("fit did not converge after {} iterations (results written)", r.iterations);
    }
    Report::json(doc)
}

pub fn saturation(file: &Path) -> Result<Report> {
    let points = io::read_saturation(file)?;
    Report::json(fit_saturation(&points)?)
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    /// Excited-state lifetime without a cavity.
    #[arg(long, default_value_t = 0.94)]
    pub tau_us: f64,
    /// Zero-phonon fraction of the emission.
    #[arg(long, default_value_t = 0.23)]
    pub eta_zpl: f64,
    /// Homogeneous linewidths to tabulate (repeatable).
    #[arg(long = "linewidth-mhz", default_values_t = [67.0, 11.0, 0.69])]
    pub linewidth_mhz: Vec<f64>,
    #[arg(long, default_value_t = 0.56)]
    pub target_v: f64,
    #[arg(long, default_value_t = holeburn_core::planner::DEFAULT_WAVELENGTH_NM)]
    pub wavelength_nm: f64,
    #[arg(long, default_value_t = holeburn_core::planner::DEFAULT_REFRACTIVE_INDEX)]
    pub index: f64,
    #[arg(long, default_value_t = 1.0)]
    pub radiative_efficiency: f64,
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

fn plan_text(rows: &[PlanRow], target: f64) -> String {
    let mut s = format!(
        "{:>12}  {:>8}  {:>10}  {:>10}  {:>12}\n",
        "linewidth",
        "V(F=0)",
        format!("F_P(V={target})"),
        "Q",
        "tau_cav_ns"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>8.3} MHz  {:>8.4}  {:>10.1}  {:>10.0}  {:>12.4}{}\n",
            r.homogeneous_mhz,
            r.bare_visibility,
            r.plan.purcell,
            r.plan.q,
            r.plan.tau_cav_ns,
            if r.plan.already_met { "  (reached without a cavity)" } else { "" }
        ));
    }
    s
}

pub fn plan(a: &PlanArgs) -> Result<Report> {
    let mut base = EmitterOpticalParams::new(a.tau_us, a.eta_zpl, a.linewidth_mhz.first().copied().unwrap_or(1.0))?;
    base.wavelength_nm = a.wavelength_nm;
    base.refractive_index = a.index;
    base.radiative_efficiency = a.radiative_efficiency;
    base.validate()?;
    let rows = plan_table(&base, &a.linewidth_mhz, a.target_v)?;
    let doc = json!({
        "tau_us": a.tau_us,
        "eta_zpl": a.eta_zpl,
        "target_visibility": a.target_v,
        "rows": rows,
    });
    let text = (!a.json).then(|| plan_text(&rows, a.target_v));
    Ok(Report { json: doc, text })
}

#[derive(Debug, Clone, Args)]
pub struct LifetimeArgs {
    /// Transient CSV (time_us, counts).
    pub file: Option<PathBuf>,
    /// Non-resonant decay recorded on the same bins, subtracted first.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Generate a Poisson transient with this lifetime instead of reading one.
    #[arg(long)]
    pub simulate_tau_us: Option<f64>,
    #[arg(long, default_value_t = 2000.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 20.0)]
    pub background: f64,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    #[arg(long, default_value_t = 8.0)]
    pub span_us: f64,
}

pub fn lifetime(a: &LifetimeArgs, out: Option<&Path>, seed: u64) -> Result<Report> {
    let transient = match (&a.file, a.simulate_tau_us) {
        (Some(f), None) => io::read_transient(f)?,
        (None, Some(tau)) => {
            let t = poisson_decay(&linspace(0.0, a.span_us, a.bins), tau, a.amplitude, a.background, seed)?;
            if let Some(dir) = out {
                output::write(dir, "transient.csv", &io::format_transient(&t))?;
            }
            t
        }
        _ => bail!("give either a transient file or --simulate-tau-us"),
    };
    let reference = a.reference.as_deref().map(io::read_transient).transpose()?;
    Report::json(fit_lifetime(&transient, reference.as_ref())?)
}

#[derive(Debug, Clone, Args)]
pub struct T1Args {
    /// Ratio CSV (dark_time_ms, ratio[, sigma]).
    pub file: Option<PathBuf>,
    /// Simulate the pulse sequence for this T1 instead of reading ratios.
    #[arg(long)]
    pub simulate_t1_ms: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    pub extinction: f64,
    #[arg(long = "dark-ms", value_delimiter = ',', default_values_t = [1.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0])]
    pub dark_ms: Vec<f64>,
    /// Gaussian noise added to simulated ratios.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 2.005)]
    pub g_electron: f64,
    #[arg(long, default_value_t = 0.91)]
    pub g_hole: f64,
    #[arg(long, default_value_t = 213.8)]
    pub field_mt: f64,
    #[arg(long, default_value_t = 600.0)]
    pub homogeneous_mhz: f64,
    #[arg(long, default_value_t = 0.94)]
    pub tau_us: f64,
}

pub fn t1(a: &T1Args, out: Option<&Path>, seed: u64) -> Result<Report> {
    let series = match (&a.file, a.simulate_t1_ms) {
        (Some(f), None) => io::read_ratios(f)?,
        (None, Some(t1_ms)) => {
            let scheme =
                build_four_level(&ZeemanConfig::new(a.g_electron, a.g_hole, a.field_mt)?, a.homogeneous_mhz, a.tau_us)?;
            let protocol = T1Protocol { extinction: a.extinction, ..Default::default() };
            let noise = normal_samples(a.dark_ms.len(), a.noise, seed);
            let mut ratio = Vec::new();
            for (i, &d) in a.dark_ms.iter().enumerate() {
                info!("dark time {d} ms");
                let tr = simulate_t1_sequence(&scheme, &protocol, t1_ms, d)?;
                ratio.push(polarization_ratio(&tr.data, &tr.reference)?.ratio + noise[i]);
            }
            let sigma = (a.noise > 0.0).then(|| vec![a.noise; ratio.len()]);
            let s = io::RatioSeries { dark_time_ms: a.dark_ms.clone(), ratio, sigma };
            if let Some(dir) = out {
                output::write(dir, "ratios.csv", &io::format_ratios(&s))?;
            }
            s
        }
        _ => bail!("give either a ratio file or --simulate-t1-ms"),
    };
    let fit = fit_t1(&series.points(), series.sigma.as_deref())?;
    Report::json(json!({
        "dark_time_ms": series.dark_time_ms,
        "ratio": series.ratio,
        "fit": fit,
    }))
}

pub fn purcell_avg(purcell: &Path, coupling: &Path, intensity: &Path) -> Result<Report> {
    let maps = FieldMaps::new(io::read_grid(purcell)?, io::read_grid(coupling)?, io::read_grid(intensity)?)?;
    Report::json(json!({
        "mode_weighted": ensemble_purcell(&maps, ExcitationProfile::Mode)?,
        "uniform": ensemble_purcell(&maps, ExcitationProfile::Uniform)?,
        "cells": maps.purcell.values.len(),
    }))
}
